// Two-sample average of an analog input.
uint8 TOIE0 @ 0x6E.0;
uint8 ADCH @ 0x79;
volatile uint8 last;
volatile uint8 prev;
uint8 avg;

ISR(TIMER0_OVF_vect) {
    prev = last;
    last = ADCH;
}

void main() {
    uint16 s;
    TOIE0 = 1;
    while (1) {
        cli();
        s = last;
        s = s + prev;
        sei();
        avg = s / 2;
    }
}
